"""Environment variable loader with validation and type conversion."""

import os
from typing import Optional

from dotenv import load_dotenv


class EnvironmentConfig:
    """Environment configuration manager with validation."""

    def __init__(self) -> None:
        """Initialize environment configuration by loading .env file."""
        load_dotenv()

    @staticmethod
    def get_required_env(key: str) -> str:
        """Get required environment variable or raise error if missing.

        Args:
            key: Environment variable name

        Returns:
            Environment variable value

        Raises:
            ValueError: If environment variable is not set
        """
        value = os.getenv(key)
        if not value:
            raise ValueError(f"Required environment variable {key} is not set")
        return value

    @staticmethod
    def get_optional_env(key: str, default: str = "") -> str:
        """Get optional environment variable with default value.

        Args:
            key: Environment variable name
            default: Default value if not set

        Returns:
            Environment variable value or default
        """
        return os.getenv(key, default)

    @classmethod
    def get_int_env(cls, key: str, default: int) -> int:
        """Get an integer environment variable.

        Raises:
            ValueError: If the variable is set but is not an integer
        """
        raw = cls.get_optional_env(key, str(default))
        try:
            return int(raw)
        except ValueError:
            raise ValueError(f"Environment variable {key} must be an integer, got {raw!r}")

    # Run output
    @property
    def output_dir(self) -> str:
        """Root directory under which per-run directories are created."""
        return self.get_optional_env("SECURE_OUTPUT_DIR", "runs")

    # Logging
    @property
    def log_level(self) -> str:
        """Project log level."""
        return self.get_optional_env("SECURE_LOG_LEVEL", "INFO")

    @property
    def log_file(self) -> Optional[str]:
        """Optional extra log file shared by every run."""
        return self.get_optional_env("SECURE_LOG_FILE") or None

    # Reproducibility
    @property
    def default_seed(self) -> int:
        """Seed used when a command is invoked without --seed."""
        return self.get_int_env("SECURE_SEED", 0)


# Global configuration instance
config = EnvironmentConfig()
