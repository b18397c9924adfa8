from .config import *
from .report import *
from .runner import *
from .presets import *
