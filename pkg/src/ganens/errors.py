class GanEnsError(Exception):
    pass


class ShapeError(GanEnsError, ValueError):
    pass


class CacheMismatchError(GanEnsError):
    pass


class TrainingDivergenceError(GanEnsError, FloatingPointError):
    def __init__(self, message, layer=None, epoch=None, batch=None):
        super().__init__(message)
        self.layer = layer
        self.epoch = epoch
        self.batch = batch


class DegenerateBlockError(GanEnsError, ValueError):
    def __init__(self, block):
        super().__init__(f"feature block {block} has zero mean pairwise distance")
        self.block = block


class CheckpointError(GanEnsError):
    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{message} (field: {field})")
        self.field = field


class ConfigError(GanEnsError, ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(f"  - {p}" for p in self.problems))
