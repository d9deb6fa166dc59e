from functools import lru_cache

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="GBN_", env_file=".env", extra="ignore")

    # Logging
    log_level: str = "INFO"
    log_format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Filesystem
    output_root: str = "runs"
    data_root: str = "data"
    metrics_filename: str = "metrics.csv"

    # Reproducibility
    default_seed: int = 1234

    # Oracle suite
    oracle_mc_draws: int = Field(default=100000, gt=0)
    oracle_sampler_draws: int = Field(default=200000, gt=0)
    oracle_perturbations: int = Field(default=100, gt=0)

    @field_validator("log_level")
    def log_level_known(cls, v: str) -> str:
        v = v.upper()
        if v not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level: {v}")
        return v


settings = Settings()


@lru_cache()
def get_settings() -> Settings:
    """Get the process-wide settings instance."""
    return settings
