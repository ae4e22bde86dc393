from glovegate.model import *
from glovegate.stream import *
from glovegate.nn import *
from glovegate.gate import *
from glovegate.smoothing import *
from glovegate.eval import *
