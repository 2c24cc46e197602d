from .files import *
from .corpus import *
from .queries import *
from .trec import *
from .snapshot import *
from .oracle_table import *
from .ledger import *
