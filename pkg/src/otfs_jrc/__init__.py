"""Joint radar and communication simulation over OTFS frames."""

from .grid import Constellation, FrameParams, RngStream, bpsk, draw_frame, qam16, qpsk
from .channel import PathParams, PathSet, make_scenario
from .modem import ChannelMatrix, build_channel, transmit
from .kernels import BACKEND_NAME

__version__ = "0.1.0"

__all__ = ["Constellation", "FrameParams", "RngStream", "bpsk", "draw_frame", "qam16", "qpsk",
           "PathParams", "PathSet", "make_scenario", "ChannelMatrix", "build_channel",
           "transmit", "BACKEND_NAME", "__version__"]
