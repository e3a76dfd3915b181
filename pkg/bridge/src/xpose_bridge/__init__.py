"""Network service exposing a novel-view diffusion model behind the /v1
generation protocol."""

__version__ = "0.1.0"
