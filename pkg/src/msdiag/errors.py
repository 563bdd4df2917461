"""Exception types. Each carries the name of the module that raised it."""


class MsDiagError(ValueError):
    module = "msdiag"

    def __str__(self):
        return f"{self.module}: {super().__str__()}"


class DatasetError(MsDiagError):
    module = "dataset"


class PreprocessError(MsDiagError):
    module = "preprocess"


class ModelError(MsDiagError):
    module = "lda_core"


class MetricError(MsDiagError):
    module = "metrics"


class CrossValidationError(MsDiagError):
    module = "double_cv"


class PermutationError(MsDiagError):
    module = "permutation"


class PosthocError(MsDiagError):
    module = "posthoc"


class DesignError(MsDiagError):
    module = "design"


class SynthError(MsDiagError):
    module = "synthgen"
