"""
🔧 BetheLab Configuration
Configuración centralizada para el motor de probabilidades de transición,
el oráculo de cadenas de Markov y la suite de verificación.
"""
import os
from dotenv import load_dotenv

# Cargar variables de entorno desde .env
load_dotenv()

# ========================================
# 🧮 QUADRATURE (CONTOUR INTEGRALS)
# ========================================
CONTOUR_INITIAL_NODES = int(os.getenv("CONTOUR_INITIAL_NODES", "32"))  # M₀, potencia de dos
CONTOUR_MAX_NODES = int(os.getenv("CONTOUR_MAX_NODES", "4096"))
CONTOUR_REL_TOL = float(os.getenv("CONTOUR_REL_TOL", "1e-10"))
CONTOUR_MAX_GRID_POINTS = int(os.getenv("CONTOUR_MAX_GRID_POINTS", str(2 ** 26)))  # M^N máximo

# Radio de trabajo relativo al radio certificado
SMALL_RADIUS_FACTOR = float(os.getenv("SMALL_RADIUS_FACTOR", "0.8"))
SMALL_RADIUS_FLOOR = float(os.getenv("SMALL_RADIUS_FLOOR", "0.25"))
LARGE_RADIUS_FACTOR = float(os.getenv("LARGE_RADIUS_FACTOR", "2.0"))
FREE_RADIUS_CAP = float(os.getenv("FREE_RADIUS_CAP", "10.0"))  # sin polos finitos (N=1)

# Certificación de polos
POLE_MARGIN = float(os.getenv("POLE_MARGIN", "0.1"))
POLE_REL_THRESHOLD = float(os.getenv("POLE_REL_THRESHOLD", "1e-13"))
RADIUS_CERT_ANGLES = int(os.getenv("RADIUS_CERT_ANGLES", "4096"))  # fase de ξ_α; la de ξ_β se minimiza exacta
SPLIT_RADIUS_GAP = float(os.getenv("SPLIT_RADIUS_GAP", "0.2"))  # r_{k+1} ≥ (1 + gap)·max(r_k, polo)
RADIUS_SEARCH_STEPS = int(os.getenv("RADIUS_SEARCH_STEPS", "20"))

CANCELLATION_LIMIT = float(os.getenv("CANCELLATION_LIMIT", "1e12"))
ENGINE_WORKERS = int(os.getenv("ENGINE_WORKERS", "1"))
MAX_PARTICLES = int(os.getenv("MAX_PARTICLES", "10"))

# ========================================
# 🎲 CTMC ORACLE
# ========================================
ORACLE_TOL = float(os.getenv("ORACLE_TOL", "1e-10"))
ORACLE_MAX_STATES = int(os.getenv("ORACLE_MAX_STATES", "400000"))
ORACLE_MAX_POISSON_TERMS = int(os.getenv("ORACLE_MAX_POISSON_TERMS", "200000"))
AVALANCHE_MAX_STEPS = int(os.getenv("AVALANCHE_MAX_STEPS", "10000"))
WINDOW_SAFETY = float(os.getenv("WINDOW_SAFETY", "1.5"))
SIMULATION_CHUNK = int(os.getenv("SIMULATION_CHUNK", "1000"))  # muestras por semilla hija

# ========================================
# ✅ VERIFICATION
# ========================================
DEFAULT_SEED = int(os.getenv("DEFAULT_SEED", "20100"))
VERIFY_WORKERS = int(os.getenv("VERIFY_WORKERS", "1"))

# ========================================
# 📁 FILE PATHS
# ========================================
BASE_DIR = os.path.dirname(os.path.abspath(__file__))
EXPORTS_DIR = os.getenv("EXPORTS_DIR", os.path.join(BASE_DIR, "exports"))
LOGS_DIR = os.getenv("LOGS_DIR", os.path.join(BASE_DIR, "logs"))

# NOTE: Los directorios no se crean aquí para evitar efectos secundarios en config.

# ========================================
# 📝 LOGGING CONFIGURATION
# ========================================
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FORMAT = os.getenv("LOG_FORMAT", "text")  # json or text
LOG_MAX_BYTES = 10 * 1024 * 1024  # 10MB
LOG_BACKUP_COUNT = 5

# ========================================
# 🧠 APPLICATION
# ========================================
APP_NAME = "BetheLab"
APP_VERSION = "1.0.0"
STORAGE_BACKEND = os.getenv("STORAGE_BACKEND", "local")

# ========================================
# 🔍 DEBUG MODE
# ========================================
DEBUG_MODE = os.getenv("DEBUG_MODE", "False").lower() == "true"
