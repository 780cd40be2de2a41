from .misc import *
from .exceptions import PackLabError
