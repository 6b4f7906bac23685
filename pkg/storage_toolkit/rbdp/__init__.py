from .rbdp import *
