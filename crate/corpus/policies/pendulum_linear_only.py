def policy(obs: np.ndarray) -> float:
    """Linear feedback only, saturated to the actuator range."""
    theta = np.arctan2(-obs[1], obs[0])
    theta_dot = obs[2]
    return np.clip(5 * theta - 0.9 * theta_dot, -1, 1)
