"""Exception hierarchy shared across the toolkit."""


class EventJetError(Exception):
    """Base class for all toolkit errors."""


class AlgebraError(EventJetError, ValueError):
    """Mismatched polynomial spaces, bad indices or arity."""


class DomainError(EventJetError, ValueError):
    """A function was applied outside its domain at the expansion point."""


class SchemaError(EventJetError, ValueError):
    """A weight file, map document or mesh does not match its schema."""


class ConfigError(EventJetError, ValueError):
    """Invalid or incomplete run configuration."""


class IntegrationError(EventJetError, RuntimeError):
    """Step-size collapse, step budget exhausted or non-finite state."""


class EventMissedError(EventJetError, RuntimeError):
    """The trajectory never crossed the event manifold."""


class TransversalityError(EventJetError, RuntimeError):
    """The event is crossed (or touched) with vanishing time derivative."""


class FitError(EventJetError, RuntimeError):
    """Event-net regression diverged."""
