from .entity import *
from .conf import *
from .schemas import *
from .services import *
from .repository import *
from .routes import *
