def policy(obs: np.ndarray) -> np.ndarray:
    """Simplified ball-in-cup policy: lateral offset plus a vertical stroke, lowered when the ball is above the cup."""
    action = np.zeros((2,))
    if obs[0] < 0.2 or obs[1] < 0.2:
        action[0] = 1
    if obs[3] < -0.2 or obs[6] > 0.5 or obs[7] < -0.5:
        action[1] = 1
    elif obs[4] > 0.2 or obs[5] < -0.2:
        action[1] = -1
    if obs[3] - obs[1] > 0.1:
        action[1] = action[1] - 0.1
    return action
