class ConfigError(ValueError):
    """Invalid parameters or configuration. ``field`` is a dotted path when known."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


def _rebuild(cls, args, state):
    exc = cls.__new__(cls)
    exc.args = args
    exc.__dict__.update(state)
    return exc


class ModelError(RuntimeError):
    """Failure while running the model on valid inputs."""

    # subclasses take structured arguments; keep them picklable across worker processes
    def __reduce__(self):
        return _rebuild, (type(self), self.args, self.__dict__)


class NonPositiveRate(ModelError):
    def __init__(self, path: int, time: int, value: float):
        self.path, self.time, self.value = path, time, value
        super().__init__(f"non-positive rate {value!r} at path {path}, t={time}")


class SingularSystem(ModelError):
    def __init__(self, t: int, detail: str = ""):
        self.t = t
        super().__init__(f"normal equations could not be solved at t={t}" + (f": {detail}" if detail else ""))
