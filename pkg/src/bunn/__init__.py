"""Bundle neural networks on graphs, built on a small numpy autodiff core.

Typical entry points::

    from bunn.graph import barbell_graph
    from bunn.model import BunnModelConfig, bunn_model_forward
    from bunn.experiments import ExperimentConfig, run_experiments
"""

__version__ = "0.1.0"
