"""Exception types shared across the package."""


class CostLensError(Exception):
    """Base class for all package errors."""


class DimensionError(CostLensError):
    """Operand shapes are incompatible for the requested operation."""


class ContractError(CostLensError):
    """A caller violated an API precondition."""


class StructuralError(CostLensError):
    """A plan graph is malformed (cycles, unreachable nodes, broken tree)."""


class SchemaError(CostLensError):
    """A plan document does not conform to the plan schema."""


class FeaturizationError(CostLensError):
    """A node cannot be featurized (unknown label, missing attribute)."""


class FormatError(CostLensError):
    """A persisted artifact cannot be read (corrupt, wrong version)."""


class ParameterError(CostLensError):
    """Invalid configuration values (infeasible bounds, empty split)."""


class NumericalError(CostLensError):
    """A computation produced non-finite values."""
