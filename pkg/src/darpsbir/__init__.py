"""On-the-fly fine-grained sketch-based image retrieval: a reinforced
glimpse agent over procedurally generated sketch/image pairs, trained with
a hybrid supervised + bootstrapped policy-gradient loss against a dynamic
ranking reward, with live per-stroke retrieval served over HTTP."""

__version__ = "0.1.0"
