"""Exception hierarchy shared by all cavityqc modules."""


class CavityQCError(Exception):
    """Base class for every error raised by this package."""


class ContractViolation(CavityQCError, ValueError):
    """A physics or numerical precondition does not hold."""


class InvalidLabelError(ContractViolation):
    pass


class UnphysicalVoltageError(ContractViolation):
    pass


class UntunableTransitionError(ContractViolation):
    pass


class ProtocolViolation(ContractViolation):
    """A pulse protocol was entered in a state it does not support (e.g. cavity not in vacuum)."""


class MachineConfigError(CavityQCError, ValueError):
    pass


class CompileError(CavityQCError):
    pass


class ProgramInvalid(CavityQCError):
    """Raised when a program fails validation and the caller did not opt out."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        errors = [d for d in self.diagnostics if d.severity == "error"]
        summary = "; ".join(f"{d.code}: {d.message}" for d in errors[:3])
        super().__init__(f"{len(errors)} validation error(s): {summary}")
