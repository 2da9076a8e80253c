"""Exception types shared across the package."""


class ConfigError(Exception):
    """A configuration file is missing, unparsable, or violates an invariant."""

    def __init__(self, message, path=None, field=None, line=None):
        detail = message
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        if where:
            detail = f"{message} ({', '.join(where)})"
        super().__init__(detail)
        self.path = path
        self.field = field
        self.line = line


class SingularityError(Exception):
    """A task Jacobian is rank deficient beyond what damped inversion can handle."""


class DivergenceError(Exception):
    """The simulation state left the sanity envelope (non-finite or exploding)."""
