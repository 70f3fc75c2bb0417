# Import modules to make them available at the package level
from .exceptions import *
from .data_structures import *
from .file_handlers import *
from .geo_utils import *
from .hierarchy import *
from .model import *
from .moves import *
from .fitting import *
from .exports import *
from .config_utils import *
