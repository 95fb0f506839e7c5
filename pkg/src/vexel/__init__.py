"""Vector graphics latent diffusion toolkit: SVG normalization, matrix codec,
vector-pixel fusion VAE and a text-conditioned diffusion transformer."""

__version__ = "0.1.0"
