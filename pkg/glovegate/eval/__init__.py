from glovegate.eval.dataset import *
from glovegate.eval.metrics import *
from glovegate.eval.synth import *
from glovegate.eval.runner import *
