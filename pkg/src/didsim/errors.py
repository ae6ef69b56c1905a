"""Exception hierarchy shared by every didsim module."""


class DidSimError(Exception):
    """Base class for all toolkit errors."""


class InputError(DidSimError, ValueError):
    """Malformed or out-of-contract input."""


class CanonicalizationError(InputError):
    """A value has no canonical serialization (floats, duplicate keys, ...)."""


class AuthorizationError(DidSimError):
    """The signer is not allowed to perform the requested mutation."""


class LifecycleError(DidSimError):
    """The target is in a lifecycle state that forbids the operation."""


class ConflictError(DidSimError):
    """The operation collides with existing ledger state."""


class NotFoundError(DidSimError, LookupError):
    """The requested identifier is not visible."""


class ConfigError(InputError):
    """A run configuration violates its schema."""
