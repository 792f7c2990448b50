from __future__ import annotations

from enum import Enum


class Modality(str, Enum):
    VIS = "VIS"
    AUD = "AUD"
    AUD_VIS = "AUD_VIS"

    @property
    def token(self) -> str:
        return f"<{self.value}>"

    @property
    def visual(self) -> bool:
        return self is not Modality.AUD

    @property
    def audio(self) -> bool:
        return self is not Modality.VIS

    @classmethod
    def parse(cls, value) -> "Modality":
        if isinstance(value, Modality):
            return value
        try:
            return cls(str(value).strip("<>"))
        except ValueError:
            raise ValueError(f"unknown modality {value!r}; expected one of VIS, AUD, AUD_VIS") from None


MODALITY_TOKENS = {m.token: m for m in Modality}
