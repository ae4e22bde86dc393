from glovegate.nn.base import *
from glovegate.nn.layers import *
from glovegate.nn.network import *
from glovegate.nn.optimizer import *
from glovegate.nn.trainer import *
from glovegate.nn.builders import *
from glovegate.nn.codec import *
