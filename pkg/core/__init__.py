"""Network models, rational algebra and the network Jacobian."""
