from enum import unique, Enum
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, NonNegativeFloat, model_validator


@unique
class CommandStatus(str, Enum):
    ok = "ok"
    error = "error"


class CommandResult(BaseModel):
    """
    outcome of one CLI invocation; payload is the serialized library result
    """
    model_config = ConfigDict(frozen=True, validate_assignment=True)

    status: CommandStatus
    payload: dict[str, Any] = {}
    # CSV body, one dict per line
    rows: tuple[dict[str, Any], ...] = ()
    code: Optional[str] = None
    message: Optional[str] = None
    elapsed: NonNegativeFloat = 0.0
    # 2 is reserved for usage errors
    exit_code: int = 0
    # render rows as CSV instead of the JSON payload
    csv: bool = False

    @classmethod
    def ok(cls, payload: dict[str, Any], rows=(), elapsed: float = 0.0) -> 'CommandResult':
        return cls(status=CommandStatus.ok, payload=payload, rows=tuple(rows), elapsed=elapsed)

    @classmethod
    def error(cls, code: str, message: str, exit_code: int = 1, elapsed: float = 0.0) -> 'CommandResult':
        return cls(status=CommandStatus.error, code=code, message=message, exit_code=exit_code,
                   payload={"status": "error", "code": code, "message": message}, elapsed=elapsed)

    @model_validator(mode='after')
    def assert_valid(self) -> 'CommandResult':
        if self.status == CommandStatus.error:
            if not self.code or not self.message:
                raise ValueError("error results need a code and a message")
            if self.exit_code == 0:
                raise ValueError("error results need a non-zero exit code")
        elif self.exit_code != 0:
            raise ValueError("ok results exit with 0")
        return self
