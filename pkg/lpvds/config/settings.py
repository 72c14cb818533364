# 配置管理
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """进程级配置，只从环境变量读取日志相关项"""

    model_config = SettingsConfigDict(
        env_prefix="LPVDS_",
        env_file=".env",
        extra="ignore",
    )

    # 日志配置
    LOG_LEVEL: str = "INFO"
    LOG_FORMAT: str = "%(asctime)s %(levelname)s [%(name)s] %(message)s"


settings = Settings()
