from contextlib import asynccontextmanager

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from .config import settings
from .database import Base, engine
from .logging_config import get_logger, setup_logging
from .routers import evaluations, library, render, urdf_models

logger = get_logger("api")


@asynccontextmanager
async def lifespan(app: FastAPI):
    # Startup
    setup_logging(settings.log_level, settings.log_file)
    Base.metadata.create_all(bind=engine)
    if settings.library_path:
        logger.info(f"API_START library={settings.library_path}")
    else:
        logger.warning("LIBRARY_PATH not set. Library, compile and mesh-backed endpoints are unavailable.")

    yield

    # Shutdown
    pass


app = FastAPI(title="Articraft API", lifespan=lifespan)

# Configure CORS
origins = [
    "http://localhost",
    "http://localhost:3000",
    "http://localhost:5173",
    "http://127.0.0.1",
    "http://127.0.0.1:3000",
    "http://127.0.0.1:5173",
]

app.add_middleware(
    CORSMiddleware,
    allow_origins=origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(urdf_models.router, prefix="/models", tags=["Models"])
app.include_router(evaluations.router, prefix="/evaluations", tags=["Evaluations"])
app.include_router(render.router, prefix="/render", tags=["Render"])
app.include_router(library.router, prefix="/library", tags=["Library"])


@app.get("/")
def root():
	return {"message": "Articraft API running"}
