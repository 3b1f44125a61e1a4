from __future__ import annotations

from functools import lru_cache

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Pipeline configuration resolved from POSE_* env vars or a local ``.env``.

    Defaults: 4-px cells, 8/6 geometric types for
    large/small parts, 2/4 symbols per type, 10 cross-validation rounds.
    """

    model_config = SettingsConfigDict(env_prefix="POSE_", env_file=".env", extra="ignore")

    threads: int = Field(1, ge=1)
    cell_size: int = Field(4, ge=2)
    k_large: int = Field(8, ge=1)
    k_small: int = Field(6, ge=1)
    sym_large: int = Field(2, ge=1)
    sym_small: int = Field(4, ge=1)
    cv_rounds: int = Field(10, ge=1)
    prune: float = Field(0.05, ge=0.0)
    c: float = Field(0.002, ge=0.0)
    lsvm_c: float = Field(0.002, gt=0.0)
    epochs: int = Field(10, ge=1)
    seed: int = 0
    min_cooccurrence: int = Field(1, ge=1)
    negatives_per_part: int = Field(200, ge=1)
    person_height: float = Field(150.0, gt=0.0)
    init_from_symbols: bool = True
    svm_tol: float = Field(1e-3, gt=0.0)
    svm_max_epochs: int = Field(1000, ge=1)

    def with_overrides(self, **overrides) -> "Settings":
        """
        Return a validated copy with the non-None overrides applied.
        """
        update = {k: v for k, v in overrides.items() if v is not None}
        if not update:
            return self
        return Settings.model_validate({**self.model_dump(), **update})


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
