"""Error hierarchy shared by every service.

Every error is also a ``ValueError`` so callers that only care about
"bad input" can keep catching that.
"""
from typing import Iterable, Optional


class CorvetError(ValueError):
    kind = "runtime"


class ContractViolation(CorvetError):
    kind = "contract"


class CordicDomainError(CorvetError):
    kind = "domain"


class ConfigurationError(CorvetError):
    kind = "config"


class AddressError(CorvetError):
    kind = "address"


class LoadError(CorvetError):
    kind = "load"

    def __init__(self, message: str, path: Optional[str] = None, missing: Optional[Iterable[int]] = None):
        self.path = path
        self.missing = sorted(missing) if missing is not None else []
        if path:
            message = f"{path}: {message}"
        if self.missing:
            shown = ", ".join(f"0x{a:x}" for a in self.missing[:8])
            more = f" (+{len(self.missing) - 8} more)" if len(self.missing) > 8 else ""
            message = f"{message}; missing addresses {shown}{more}"
        super().__init__(message)


class SimulationError(CorvetError):
    kind = "simulation"

    def __init__(self, message: str, layer: Optional[int] = None):
        self.layer = layer
        if layer is not None:
            message = f"layer {layer}: {message}"
        super().__init__(message)
