from .data_io import *
