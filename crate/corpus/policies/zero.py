def policy(obs: np.ndarray) -> float:
    """Returns a control action."""
    action = 0.0
    return action
