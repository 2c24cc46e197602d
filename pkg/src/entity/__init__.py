from .errors import *
from .models import *
