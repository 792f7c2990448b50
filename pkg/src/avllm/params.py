"""Named parameter registry shared by encoders, projectors and the LM."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from .numerics import Parameter


class ParamStore:
    """Ordered name -> Parameter mapping.

    Names are dot paths ("encoder.visual.patch_embed.W"); freeze schedules
    select parameters by prefix.
    """

    def __init__(self) -> None:
        self._params: OrderedDict[str, Parameter] = OrderedDict()

    def add(self, name: str, data: np.ndarray, trainable: bool = True) -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = Parameter(name, data, trainable=trainable)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        try:
            return self._params[name]
        except KeyError:
            raise KeyError(f"unknown parameter {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def with_prefix(self, prefix: str) -> list[Parameter]:
        return [p for n, p in self._params.items() if n.startswith(prefix)]

    def has_prefix(self, prefix: str) -> bool:
        return any(n.startswith(prefix) for n in self._params)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def set_trainable(self, prefixes: tuple[str, ...] | list[str]) -> None:
        prefixes = tuple(prefixes)
        for n, p in self._params.items():
            p.set_trainable(n.startswith(prefixes) if prefixes else False)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        unknown = sorted(set(state) - set(self._params))
        if unknown:
            raise KeyError(f"unknown parameter names: {unknown}")
        missing = sorted(set(self._params) - set(state))
        if missing:
            raise KeyError(f"missing parameter names: {missing}")
        for n, arr in state.items():
            p = self._params[n]
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {n}: {arr.shape} vs {p.data.shape}")
            p.data = np.array(arr, dtype=p.data.dtype, copy=True)

    def astype(self, dtype) -> "ParamStore":
        """Deep copy with every parameter cast to ``dtype``."""
        out = ParamStore()
        for n, p in self._params.items():
            out.add(n, p.data.astype(dtype), trainable=p.trainable)
        return out

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for n, p in self._params.items():
            out.add(n, p.data.copy(), trainable=p.trainable)
        return out
