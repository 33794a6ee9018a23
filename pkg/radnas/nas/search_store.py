"""
SQLite store of evaluated candidates, keyed by (context, gene id).

`context` names what a fitness value depends on besides the gene (the
supernet checkpoint hash and evaluation settings), so a store can be reused
across runs without serving stale values.
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, List, Optional, Union

from sqlalchemy import JSON, Column, DateTime, Float, Integer, String, UniqueConstraint, create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

logger = logging.getLogger(__name__)

Base = declarative_base()


class CandidateRecord(Base):
    """One evaluated subnet"""

    __tablename__ = "candidates"
    __table_args__ = (UniqueConstraint("context", "gene_id", name="uq_context_gene"),)

    candidate_id = Column(Integer, primary_key=True)
    context = Column(String(64), nullable=False, index=True)
    gene_id = Column(String(32), nullable=False, index=True)
    space_hash = Column(String(32), nullable=False)
    choices = Column(JSON, nullable=False)
    fitness = Column(Float, nullable=False)
    params = Column(Integer, nullable=False)
    flops = Column(Integer, nullable=False)
    iteration = Column(Integer, nullable=False, default=0)
    created_at = Column(DateTime, default=datetime.utcnow)


class SearchStore:
    """Manager for the candidate cache"""

    def __init__(self, path: Union[str, Path], context: str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.context = context
        self.engine = create_engine(f"sqlite:///{self.path}", echo=False)
        self.SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=self.engine)
        Base.metadata.create_all(bind=self.engine)
        logger.info("[STORE] candidate store ready at %s", self.path)

    def get_fitness(self, gene_id: str) -> Optional[float]:
        session = self.SessionLocal()
        try:
            record = session.query(CandidateRecord).filter_by(context=self.context, gene_id=gene_id).first()
            return None if record is None else float(record.fitness)
        finally:
            session.close()

    def save_candidate(self, gene_id: str, space_hash: str, choices: Dict[str, int], fitness: float, params: int, flops: int, iteration: int) -> bool:
        session = self.SessionLocal()
        try:
            exists = session.query(CandidateRecord).filter_by(context=self.context, gene_id=gene_id).first()
            if exists is not None:
                return False
            session.add(
                CandidateRecord(
                    context=self.context,
                    gene_id=gene_id,
                    space_hash=space_hash,
                    choices=dict(choices),
                    fitness=float(fitness),
                    params=int(params),
                    flops=int(flops),
                    iteration=int(iteration),
                )
            )
            session.commit()
            return True
        except Exception as e:
            session.rollback()
            logger.error("[STORE] failed to save candidate %s: %s", gene_id, e)
            return False
        finally:
            session.close()

    def list_candidates(self) -> List[dict]:
        """All candidates of this context, best first."""
        session = self.SessionLocal()
        try:
            rows = (
                session.query(CandidateRecord)
                .filter_by(context=self.context)
                .order_by(CandidateRecord.fitness.desc(), CandidateRecord.params.asc(), CandidateRecord.candidate_id.asc())
                .all()
            )
            return [
                {
                    "gene_id": r.gene_id,
                    "choices": dict(r.choices),
                    "fitness": r.fitness,
                    "params": r.params,
                    "flops": r.flops,
                    "iteration": r.iteration,
                }
                for r in rows
            ]
        finally:
            session.close()

    def close(self) -> None:
        self.engine.dispose()
