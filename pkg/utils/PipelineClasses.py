import sys
import param
from typing import List


class ConfigBase(param.Parameterized):
    """
    Base class for the pipeline's configuration records.

    Every configuration is a ``param.Parameterized`` so values are type and
    bounds checked on assignment. Subclasses only declare parameters.
    """

    def to_dict(self) -> dict:
        """
        Return the parameter values as a plain dictionary (without ``name``).

        Example:
            >>> class StepConfig(ConfigBase):
            ...     step = param.Number(default=1e-3)
            >>> StepConfig(step=2e-3).to_dict()
            {'step': 0.002}
        """
        values = dict(self.param.values())
        values.pop("name", None)
        return values

    @classmethod
    def from_dict(cls, values: dict):
        """
        Build a configuration from a dictionary, ignoring unknown keys.

        Unknown keys are dropped so config files can carry sections for other
        commands.
        """
        known = {k: v for k, v in (values or {}).items() if k in cls.param and k != "name"}
        return cls(**known)

    def updated(self, **overrides):
        """
        Return a copy with the non-``None`` overrides applied.
        """
        values = self.to_dict()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return type(self)(**values)


class CommandReport(param.Parameterized):
    """
    Collects the human readable output and the captured warnings of a command.
    """

    output_content: str = param.String(default="", doc="Text reported on success")
    warning_content: List[str] = param.List(default=[], doc="Formatted warnings")

    def add_output(self, line: str) -> None:
        self.output_content = "\n".join(filter(None, [self.output_content, line]))

    def emit(self, stream=None) -> None:
        """
        Print the output to stdout and the warnings to stderr.
        """
        stream = stream or sys.stdout
        if self.output_content:
            print(self.output_content, file=stream)
        for warning in self.warning_content:
            print(warning, file=sys.stderr)


# Custom warning handler
class WarningHandler:
    def __init__(self):
        self.warnings = []
        self._records = []

    def warn(
        self, message, category=None, filename=None, lineno=None, file=None, line=None
    ):
        warning_message = f"Message: {message}\nCategory: {category.__name__ if category else 'N/A'}\nFile: {filename if filename else 'N/A'}\nLine: {lineno if lineno else 'N/A'}\n"
        self.warnings.append(warning_message)
        self._records.append(
            {"message": str(message), "category": category.__name__ if category else "N/A"}
        )

    def records(self) -> List[dict]:
        """
        Return the captured warnings as dictionaries for JSON outputs.
        """
        return list(self._records)

    def clear(self) -> None:
        self.warnings.clear()
        self._records.clear()
