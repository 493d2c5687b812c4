import logging
from logging.handlers import RotatingFileHandler
from typing import Optional

ROOT_LOGGER = "articraft"


def setup_logging(level: str = "INFO", log_file: Optional[str] = None) -> None:
	logger = logging.getLogger(ROOT_LOGGER)
	if logger.handlers:
		return
	logger.setLevel(level.upper())

	formatter = logging.Formatter(
		"%(asctime)s | %(levelname)s | %(name)s | %(message)s"
	)

	if log_file:
		file_handler = RotatingFileHandler(
			log_file, maxBytes=1_000_000, backupCount=3, encoding="utf-8"
		)
		file_handler.setFormatter(formatter)
		logger.addHandler(file_handler)

	stream_handler = logging.StreamHandler()
	stream_handler.setFormatter(formatter)
	logger.addHandler(stream_handler)


def get_logger(name: str) -> logging.Logger:
	return logging.getLogger(f"{ROOT_LOGGER}.{name}")
