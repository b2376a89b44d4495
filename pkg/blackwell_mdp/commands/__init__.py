from blackwell_mdp.commands.analysis import analyze, gamma_star
from blackwell_mdp.commands.generate import generate
from blackwell_mdp.commands.learning import learn, sweep
from blackwell_mdp.commands.regret import gaps, pivot_scan, regret
from blackwell_mdp.commands.structure import diameter, transient_check

COMMANDS = [analyze, gamma_star, regret, gaps, pivot_scan, generate, diameter, transient_check, learn, sweep]
