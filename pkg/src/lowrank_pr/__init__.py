import logging
from .errors import *
from .measurement import *
from .spectral import *
from .metrics import *
from .algorithms import *
from .harness import *
from .instance_io import *
from .logging_config import *

logging.getLogger(__name__).addHandler(logging.NullHandler())
