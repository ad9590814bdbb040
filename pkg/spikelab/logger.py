import logging

from spikelab.utils import SPIKE_LOG_FILE, SPIKE_LOG_LEVEL

logging.basicConfig(
    level=getattr(logging, SPIKE_LOG_LEVEL, logging.INFO),
    format="%(asctime)s [%(filename)s:%(lineno)d:%(funcName)s] %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
    handlers=[logging.FileHandler(SPIKE_LOG_FILE), logging.StreamHandler()],
)

theory_logger = logging.getLogger("theory_logger")
master_logger = logging.getLogger("master_logger")
lab_logger = logging.getLogger("lab_logger")
harness_logger = logging.getLogger("harness_logger")
