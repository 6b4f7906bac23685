from .analysis import *
