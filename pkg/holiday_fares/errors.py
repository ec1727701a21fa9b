from typing import Final

# argparse already exits 2 on usage errors
EXIT_PARSE: Final[int] = 8
EXIT_VALIDATE: Final[int] = 3
EXIT_CONVERGE: Final[int] = 4
EXIT_ESTIMATE: Final[int] = 5
EXIT_RENDER: Final[int] = 6
EXIT_CHECK: Final[int] = 7


class FareError(Exception):
    """Base error. `stage` names the pipeline step that raised it."""

    stage: str = "run"
    exit_code: int = 1

    def tag(self, stage: str) -> "FareError":
        if self.stage != stage:
            self.add_note(f"raised during stage: {stage}")
        self.stage = stage
        return self

    def __str__(self) -> str:
        return f"[{self.stage}] {super().__str__()}"


class ParseError(FareError):
    stage = "parse"
    exit_code = EXIT_PARSE


class ValidationError(FareError):
    stage = "validate"
    exit_code = EXIT_VALIDATE


class ConvergenceError(FareError):
    stage = "converge"
    exit_code = EXIT_CONVERGE

    def __init__(self, message: str, *, last_change: float, iterations: int):
        super().__init__(message)
        self.last_change = last_change
        self.iterations = iterations


class EstimationError(FareError):
    stage = "estimate"
    exit_code = EXIT_ESTIMATE


class RenderError(FareError):
    stage = "render"
    exit_code = EXIT_RENDER
