"""Exception taxonomy shared across modules."""


class DomainError(ValueError):
    """An argument lies outside the operation's mathematical domain."""


class RangeError(ValueError):
    """A parameter would underflow/overflow the supported numeric range."""


class SchemaError(ValueError):
    """A structured input (profile table, JSON document) is malformed."""


class ConfigurationError(ValueError):
    """A parameter combination is geometrically or logically impossible."""
