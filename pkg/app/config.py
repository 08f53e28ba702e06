"""
Configuration module for the federated alignment simulator.
"""

import os
import logging

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Config:
    """Configuration class for the application"""

    def __init__(self):
        """Initialize the configuration"""
        # Set up basic paths
        self.APP_DIR = os.path.dirname(os.path.abspath(__file__))
        self.ROOT_DIR = os.path.dirname(self.APP_DIR)
        self.LOGS_DIR = os.environ.get('FAIRFED_LOGS_DIR', os.path.join(self.ROOT_DIR, 'logs'))
        self.DATA_DIR = os.environ.get('FAIRFED_DATA_DIR', os.path.join(self.ROOT_DIR, 'data'))
        self.OUTPUT_DIR = os.environ.get('FAIRFED_OUTPUT_DIR', os.path.join(self.ROOT_DIR, 'runs'))

        # Logging settings
        self.LOG_LEVEL = self._get_log_level()

        # Federation settings
        self.FEDERATION_HOST = os.environ.get('FEDERATION_HOST', '127.0.0.1')
        self.FEDERATION_PORT = self._get_int('FEDERATION_PORT', 7070)
        self.REPORT_DEADLINE = self._get_float('REPORT_DEADLINE', 30.0)
        self.CONNECT_TIMEOUT = self._get_float('CONNECT_TIMEOUT', 60.0)
        self.PROTOCOL_VERSION = 1

        # Worker pool for strategy x seed runs
        self.MAX_WORKERS = self._get_int('MAX_WORKERS', min(8, os.cpu_count() or 1))

    def _get_log_level(self) -> str:
        """
        Determine the log level, falling back to INFO on unknown names

        Returns:
            str: A level name understood by the logging module
        """
        level = os.environ.get('LOG_LEVEL', 'INFO').upper()
        if level not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            logging.warning(f"Invalid log level '{level}'. Using INFO.")
            return 'INFO'
        return level

    def _get_int(self, name: str, default: int) -> int:
        raw = os.environ.get(name)
        if raw is None or raw == '':
            return default
        try:
            return int(raw)
        except ValueError:
            logging.warning(f"Invalid integer for {name}: '{raw}'. Using {default}.")
            return default

    def _get_float(self, name: str, default: float) -> float:
        raw = os.environ.get(name)
        if raw is None or raw == '':
            return default
        try:
            value = float(raw)
        except ValueError:
            logging.warning(f"Invalid number for {name}: '{raw}'. Using {default}.")
            return default
        if value <= 0:
            logging.warning(f"{name} must be positive, got {value}. Using {default}.")
            return default
        return value

    def ensure_dirs(self) -> None:
        """Create the data, logs and output directories if missing"""
        for path in (self.LOGS_DIR, self.DATA_DIR, self.OUTPUT_DIR):
            os.makedirs(path, exist_ok=True)


# Create a global config instance
config = Config()
