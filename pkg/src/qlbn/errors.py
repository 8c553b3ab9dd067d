"""Exception hierarchy shared across the toolkit.

Input problems (bad files, unknown names) derive from InputError;
numerical failures (impossible evidence, oversized joints) derive
from NumericalError. The CLI maps these to exit codes 1 and 2.
"""


class QlbnError(Exception):
    """Base class for all toolkit errors."""


class InputError(QlbnError):
    """Malformed or inconsistent input data."""


class NumericalError(QlbnError):
    """Numerically impossible or intractable computation."""


class MalformedRow(InputError):
    def __init__(self, line_number, reason=""):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"malformed row at line {line_number}: {reason}")


class EmptyLog(InputError):
    pass


class XmlSyntax(InputError):
    pass


class MissingRequiredAttribute(InputError):
    def __init__(self, event_index, attribute):
        self.event_index = event_index
        self.attribute = attribute
        super().__init__(f"event {event_index} lacks required attribute {attribute!r}")


class UnknownVariable(InputError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown variable {name!r}")


class UnknownActivity(InputError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown activity {name!r}")


class UnknownEvidenceVariable(InputError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"evidence variable {name!r} not present in factor set")


class QueryIsEvidence(InputError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"query variable {name!r} is already observed")


class MissingCellsPresent(InputError):
    pass


class AllCellsMissing(InputError):
    pass


class NegativeProbability(InputError):
    pass


class DimensionOverflow(NumericalError):
    def __init__(self, n_vars, cap):
        self.n_vars = n_vars
        self.cap = cap
        super().__init__(f"joint over {n_vars} variables exceeds the {cap}-variable cap")


class ZeroMass(NumericalError):
    """All joint mass vanished: the evidence is impossible under the model."""
