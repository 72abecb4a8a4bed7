"""
Environment configuration.

Values come from the process environment, optionally seeded from a `.env`
file in the working directory. Command-line flags override these.
"""
import logging
import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class Settings(BaseModel):
    """Defaults taken from the environment."""

    out_dir: str = "results"
    log_level: str = "INFO"
    workers: int = Field(default=1, ge=1)


def load_settings(env_file: Optional[str] = None) -> Settings:
    """
    Load settings from the environment.

    Args:
        env_file: Optional explicit .env path (default: .env in cwd, if present)

    Returns:
        Settings populated from CYCLICSIM_* variables
    """
    load_dotenv(env_file)

    return Settings(
        out_dir=os.getenv('CYCLICSIM_OUT_DIR', 'results'),
        log_level=os.getenv('CYCLICSIM_LOG_LEVEL', 'INFO').upper(),
        workers=int(os.getenv('CYCLICSIM_WORKERS', '1')),
    )


def configure_logging(level: str = "INFO") -> None:
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format=LOG_FORMAT)
