from .estimate import *
from .initializers import *
from .twf import *
from .altmin import *
