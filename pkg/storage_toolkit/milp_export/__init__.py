from .milp_export import *
