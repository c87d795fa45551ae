"""Run configuration: the validated flag set and the ``--config`` key=value file."""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from colabelcrf.core.errors import ConfigError, ErrorCodes, InputFileError
from colabelcrf.core.hoc import PnPottsParams
from colabelcrf.core.model import KernelKind, KernelSpec
from colabelcrf.core.solver import SolverOptions

logger = logging.getLogger(__name__)

BOOLEAN_KEYS = frozenset({"unary_is_prob", "absent_as_zero", "split_supervoxels"})
LIST_KEYS = frozenset({"segments"})
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class RunConfig(BaseModel):
    """Every setting of an ``infer`` run."""

    model_config = ConfigDict(extra="ignore", frozen=True)

    images: Path
    unaries: Path
    out: Path
    segments: list[Path] = Field(default_factory=list)
    # pydantic evaluates these annotations at runtime: no PEP 604 unions on 3.9.
    palette: Optional[Path] = None
    labels: Optional[int] = Field(default=None, ge=1, le=255)

    batch: int = Field(default=50, ge=1, description="Frames per joint inference window")
    iters: int = Field(default=5, ge=1)
    mode: Literal["joint", "perframe"] = "joint"
    hoc: Literal["on", "off"] = "on"
    alpha: float = Field(default=0.05, ge=0.0)
    split_supervoxels: bool = False
    kmeans: int = Field(default=0, ge=0, description="Clusters of the on-the-fly k-means layer")

    w1: float = Field(default=3.0, ge=0.0)
    sxy1: float = Field(default=3.0, gt=0.0)
    st1: float = Field(default=1.0, gt=0.0)
    w2: float = Field(default=5.0, ge=0.0)
    sxy2: float = Field(default=50.0, gt=0.0)
    st2: float = Field(default=3.0, gt=0.0)
    srgb: float = Field(default=10.0, gt=0.0)

    damping: float = Field(default=1.0, gt=0.0, le=1.0)
    unary_is_prob: bool = False
    threads: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0, description="Seed of the k-means layer")

    @classmethod
    def from_namespace(cls, args: argparse.Namespace) -> RunConfig:
        """Validate parsed flags; errors name the offending flag."""
        try:
            return cls(**{k: v for k, v in vars(args).items() if v is not None})
        except ValidationError as exc:
            first = exc.errors()[0]
            flag = "--" + str(first["loc"][0]).replace("_", "-") if first["loc"] else "<config>"
            raise ConfigError(
                f"Invalid value for {flag}: {first['msg']}",
                flag=flag,
                value=first.get("input"),
            ) from exc

    @property
    def effective_batch(self) -> int:
        return 1 if self.mode == "perframe" else self.batch

    def kernels(self) -> tuple[KernelSpec, KernelSpec]:
        return (
            KernelSpec(KernelKind.SMOOTHNESS, self.w1, self.sxy1, self.st1),
            KernelSpec(KernelKind.APPEARANCE, self.w2, self.sxy2, self.st2, self.srgb),
        )

    def solver_options(self) -> SolverOptions:
        return SolverOptions(iterations=self.iters, damping=self.damping, threads=self.threads)

    def hoc_params(self) -> PnPottsParams:
        return PnPottsParams(alpha=self.alpha)


def normalize_key(key: str) -> str:
    return key.strip().lstrip("-").replace("-", "_")


def _convert(key: str, value: str, path: Path, lineno: int) -> Any:
    if key in BOOLEAN_KEYS:
        lowered = value.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ConfigError(
            f"{key} expects a boolean, got {value!r}",
            code=ErrorCodes.CONFIG_BAD_VALUE,
            path=path,
            line=lineno,
        )
    if key in LIST_KEYS:
        return [item for item in value.replace(",", " ").split() if item]
    # Strings are converted by argparse with the flag's own type.
    return value


def load_config_file(path: str | Path, known: set[str]) -> dict[str, Any]:
    """Parse ``key=value`` lines into parser defaults keyed by flag destination."""
    path = Path(path)
    if not path.is_file():
        raise InputFileError(f"Config file not found: {path}", path=path, flag="--config")
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                f"Line {lineno} is not key=value: {raw.strip()!r}",
                code=ErrorCodes.CONFIG_SYNTAX,
                path=path,
                line=lineno,
            )
        key, value = (part.strip() for part in line.split("=", 1))
        key = normalize_key(key)
        if key not in known:
            raise ConfigError(
                f"Unknown key {key!r} on line {lineno}",
                code=ErrorCodes.CONFIG_UNKNOWN_KEY,
                path=path,
                line=lineno,
                key=key,
            ).add_fix("Keys are long flag names without the leading dashes")
        values[key] = _convert(key, value, path, lineno)
    logger.info("loaded %d settings from %s", len(values), path)
    return values


__all__ = ["RunConfig", "load_config_file", "normalize_key", "BOOLEAN_KEYS", "LIST_KEYS"]
