from .logic_form import *
from .inference import *
from .oracle import *
from .retrieval import *
from .pipeline import *
from .evaluation import *
from .synth import *
from .translator import *
