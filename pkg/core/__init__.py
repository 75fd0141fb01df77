"""Restenosis Core - Lagrangian FEM for in-stent restenosis."""
import jax

# Species magnitudes span ~1e-19 to 1e23; float32 is not an option.
jax.config.update("jax_enable_x64", True)
