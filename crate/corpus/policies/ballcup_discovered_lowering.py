def policy(obs: np.ndarray) -> np.ndarray: 
    """Returns two actions between -1 and 1.
    obs size is 8."""
    # x_cup, z_cup, x_ball, z_ball = obs[0:4]
    # vx_cup, vz_cup, vx_ball, vz_ball = obs[4:8]
    
    action = np.zeros((2,)) # x_ref, z_ref
    if obs[0] < 0.2:
      action[0] = 1
    elif obs[0] > 0.8:
      action[0] = -1
    if obs[1] > 0.8:
      action[0] = -1
    elif obs[1] < 0.2:
      action[0] = 1
    
    if obs[2] > 0.8:
      action[1] = 1
    elif obs[3] < -0.2:
      action[1] = 1
    elif obs[4] > 0.2:
      action[1] = -1
    elif obs[5] < -0.2:
      action[1] = -1
    
    if obs[6] > 0.5:
      action[1] = 1
    elif obs[7] < -0.5:
      action[1] = 1
      
    if obs[3] - obs[1] > 0.1:
       action[1] = action[1] - 0.1
    return action
