import os
import sys

# Modules under src/ import each other by their top-level names
sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src"))
