__version__ = "0.1.0"

from .store import DatasetStore
from .store_client import DiskClient
