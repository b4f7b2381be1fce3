class InvariantError(RuntimeError):
    """Internal state violates a documented invariant."""
