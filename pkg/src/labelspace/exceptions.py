class DataFormatError(ValueError):
    """A malformed input file, reported with its location."""

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        self.message = message
        super().__init__(f"{self.path}:{lineno}: {message}")


class ToleranceError(RuntimeError):
    """A verification check exceeded its tolerance."""
