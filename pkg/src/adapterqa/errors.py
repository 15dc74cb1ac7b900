"""Exception hierarchy shared across the package."""


class AdapterQAError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(AdapterQAError):
    """A caller violated an operation's precondition or invariant."""


class ConfigError(AdapterQAError):
    """An experiment or model configuration is invalid or incomplete."""


class DataError(AdapterQAError):
    """Input data failed parsing or validation."""


class ManifestError(AdapterQAError):
    """A saved artifact's manifest is incompatible with its target."""
