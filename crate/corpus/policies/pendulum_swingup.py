def policy(obs: np.ndarray) -> float:
    """Returns an action between -1 and 1.
    obs size is 3.
    """
    theta = np.arctan2(-obs[1], obs[0])
    theta_dot = obs[2]
    if abs(theta) < 0.5:
        action = 5 * theta - 0.9 * theta_dot
    else:
        action = np.sign(theta_dot)
    return action
