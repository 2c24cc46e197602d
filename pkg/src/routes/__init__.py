from .truth_eval import *
