"""Exception hierarchy shared by every stage of the pipeline."""


class ConsentAuditError(Exception):
    """Base class for all errors raised by consent_audit."""


class DslSyntaxError(ConsentAuditError):
    """A form document is not well-formed JSON or does not follow the schema shape."""


class FormValidationError(ConsentAuditError):
    """A form document parsed but violates one or more DSL invariants."""

    def __init__(self, issues):
        self.issues = list(issues)
        detail = "; ".join(f"{i.path}: {i.message}" for i in self.issues)
        super().__init__(f"invalid form: {detail}")


class IngestError(ConsentAuditError):
    """Raw HTML or visual-element input could not be read."""


class SchemaError(ConsentAuditError):
    """A tuple or relation does not match the declared arity."""


class DatalogSyntaxError(ConsentAuditError):
    """Rule source text could not be parsed."""

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        where = f" (line {line}, col {col})" if line is not None else ""
        super().__init__(f"{message}{where}")


class SafetyError(ConsentAuditError):
    """A rule is not range-restricted or uses an unbound variable under negation."""


class StratificationError(ConsentAuditError):
    """The program has a cycle through negation or aggregation."""

    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__(f"program is not stratifiable; cycle through negation/aggregate: {self.cycle}")


class AnnotatorError(ConsentAuditError):
    """Base class for remote annotator failures."""


class TransportError(AnnotatorError):
    """Network or HTTP failure after all retry attempts."""


class ProtocolError(AnnotatorError):
    """The annotation service replied with something that is not the agreed JSON."""


class AuthError(AnnotatorError):
    """The annotation service rejected the configured credentials."""


class EmptyInputError(ConsentAuditError, ValueError):
    """An aggregate metric was asked for over zero forms."""


class ConfigError(ConsentAuditError):
    """The run configuration is malformed or points at missing files."""
