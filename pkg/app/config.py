import json
from enum import Enum
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Modality(str, Enum):
	TEXT = "text"
	IMAGE = "image"
	VIDEO = "video"


class LinkPoseMode(str, Enum):
	FRAME = "frame"
	CENTROID = "centroid"


class MatchingMode(str, Enum):
	NAME = "name"
	CHAMFER = "chamfer"


class AgentEndpoint(BaseModel):
	"""A chat-style vision-language endpoint. The key itself only ever lives in the environment."""

	base_url: str = "http://localhost:8080/v1"
	model: str = "vlm-flash"
	timeout: float = Field(default=60.0, gt=0)
	max_retries: int = Field(default=3, ge=0)
	api_key_env: str = "ARTICRAFT_API_KEY"
	requests_per_second: Optional[float] = Field(default=None, gt=0)
	retry_base_delay: float = Field(default=1.0, ge=0)


class LoopConfig(BaseModel):
	rating_threshold: int = Field(default=5, ge=0, le=10)
	max_iterations: int = Field(default=4, ge=1)
	modality: Modality = Modality.VIDEO
	max_frames_per_request: int = Field(default=8, ge=1)
	max_in_context_examples: int = Field(default=20, ge=0)
	examples_dir: Optional[str] = None


class EvalConfig(BaseModel):
	position_threshold: float = Field(default=0.050, gt=0)
	angular_threshold: float = Field(default=0.25, gt=0)
	chamfer_samples: int = Field(default=2048, ge=1)
	limit_range_threshold: float = Field(default=0.050, gt=0)
	limit_direction_threshold: float = Field(default=0.25, gt=0)
	link_pose_mode: LinkPoseMode = LinkPoseMode.FRAME
	matching: MatchingMode = MatchingMode.NAME
	include_fixed_joints: bool = False
	compute_chamfer: bool = True
	seed: int = 0


class RetrievalConfig(BaseModel):
	top_k_categories: int = Field(default=3, ge=1)
	max_num_images: int = Field(default=4, ge=2)
	embedding_dim: Optional[int] = Field(default=None, ge=1)
	max_parallel_selectors: int = Field(default=4, ge=1)


class RenderConfig(BaseModel):
	width: int = 192
	height: int = 192
	camera: str = "iso"
	critic_cameras: list[str] = Field(default_factory=lambda: ["front", "iso"])
	sweep_frames: int = Field(default=6, ge=2)
	external_command: Optional[list[str]] = None


class Settings(BaseSettings):
	model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", env_nested_delimiter="__", extra="ignore", populate_by_name=True)

	app_name: str = "Articraft"
	database_url: str = Field(default="sqlite:///./articraft.db", validation_alias="DATABASE_URL")
	log_level: str = Field(default="INFO", validation_alias="LOG_LEVEL")
	log_file: Optional[str] = Field(default=None, validation_alias="LOG_FILE")
	library_path: Optional[str] = Field(default=None, validation_alias="LIBRARY_PATH")

	actor: AgentEndpoint = AgentEndpoint()
	critic: AgentEndpoint = AgentEndpoint()
	embedder: AgentEndpoint = AgentEndpoint(model="clip-text")
	loop: LoopConfig = LoopConfig()
	eval: EvalConfig = EvalConfig()
	retrieval: RetrievalConfig = RetrievalConfig()
	render: RenderConfig = RenderConfig()


def load_settings(config_path: Optional[str | Path] = None) -> Settings:
	"""Environment settings, overlaid with a JSON config file for endpoints and loop settings."""
	if config_path is None:
		return Settings()
	data = json.loads(Path(config_path).read_text(encoding="utf-8"))
	base = Settings().model_dump()
	for key, value in data.items():
		if isinstance(value, dict) and isinstance(base.get(key), dict):
			base[key] = {**base[key], **value}
		else:
			base[key] = value
	return Settings(**base)


settings = Settings()
