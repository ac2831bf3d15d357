"""Logging setup from the YAML dictConfig file."""

import logging
import logging.config
from pathlib import Path
from typing import Optional

import yaml

from consent_ledger.core.config import settings

logger = logging.getLogger(__name__)


def setup_logging(config_path: Optional[Path] = None, level: Optional[str] = None) -> None:
    """Apply ``config/logging.yml``; fall back to basicConfig when it cannot be used."""
    path = Path(config_path or settings.log_config_path)
    level = (level or settings.log_level).upper()

    try:
        with open(path, "r", encoding="utf-8") as f:
            config = yaml.safe_load(f)
        for handler in config.get("handlers", {}).values():
            filename = handler.get("filename")
            if filename:
                Path(filename).parent.mkdir(parents=True, exist_ok=True)
        logging.config.dictConfig(config)
    except (OSError, ValueError, yaml.YAMLError) as e:
        logging.basicConfig(level=level, format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")
        logger.debug("Logging config %s not applied: %s", path, e)
        return

    logging.getLogger("consent_ledger").setLevel(level)
