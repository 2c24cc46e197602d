from .oracle import *
from .queries import *
from .reports import *
