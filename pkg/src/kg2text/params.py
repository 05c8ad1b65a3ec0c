"""Named parameter storage and initialisers."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .autodiff import Tensor


class ParamStore:
    """Ordered mapping of parameter name -> leaf Tensor."""

    def __init__(self, rng: np.random.Generator | None = None):
        self._params: dict[str, Tensor] = {}
        self.rng = rng if rng is not None else np.random.default_rng(0)

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self):
        return self._params.items()

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def uniform(self, name: str, shape, scale: float = 0.1) -> Tensor:
        return self.add(name, self.rng.uniform(-scale, scale, size=shape))

    def xavier(self, name: str, shape) -> Tensor:
        fan_in, fan_out = shape[0], shape[-1]
        lim = np.sqrt(6.0 / (fan_in + fan_out))
        return self.add(name, self.rng.uniform(-lim, lim, size=shape))

    def zeros(self, name: str, shape) -> Tensor:
        return self.add(name, np.zeros(shape))

    def const(self, name: str, shape, value: float) -> Tensor:
        return self.add(name, np.full(shape, value, dtype=np.float64))

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def num_scalars(self) -> int:
        return sum(t.data.size for t in self._params.values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise KeyError(f"parameter mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        for k, t in self._params.items():
            if state[k].shape != t.shape:
                raise ValueError(f"{k}: checkpoint shape {state[k].shape} != model shape {t.shape}")
            t.data = np.array(state[k], dtype=np.float64)
