import os
import logging.config
from datetime import datetime

from Settings import log_dir

LOGGERS = ['Spectra', 'Numerics', 'Simulator', 'Estimators', 'Oracle', 'CLI']


def build_logging_config(directory: str, timestamp: str, console_level: str = 'INFO') -> dict:
    """Build the dictConfig mapping for every named logger of the package.

    Args:
        directory: Directory that receives the timestamped log file
        timestamp: Suffix of the log file name
        console_level: Level of the stdout handler
    """
    return {
        'version': 1,
        'disable_existing_loggers': False,
        'formatters': {
            'standard': {
                'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
            },
            'simple': {
                'format': '%(message)s'
            }
        },
        'handlers': {
            'console': {
                'class': 'logging.StreamHandler',
                'level': console_level,
                'formatter': 'simple',
                'stream': 'ext://sys.stdout'
            },
            'run_file': {
                'class': 'logging.FileHandler',
                'level': 'DEBUG',
                'formatter': 'standard',
                'filename': os.path.join(directory, f'{timestamp}.log'),
                'mode': 'a'
            }
        },
        'loggers': {
            name: {
                'handlers': ['console', 'run_file'],
                'level': 'DEBUG',
                'propagate': False
            }
            for name in LOGGERS
        }
    }


def configure_logging(verbose: bool = False) -> str:
    """Create the log directory and apply the logging configuration.

    Returns the path of the log file of this run.
    """
    directory = log_dir()
    os.makedirs(directory, exist_ok=True)
    timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
    config = build_logging_config(directory, timestamp, 'DEBUG' if verbose else 'INFO')
    logging.config.dictConfig(config)
    return config['handlers']['run_file']['filename']
