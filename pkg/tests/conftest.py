from .fixtures.params import *  # noqa
