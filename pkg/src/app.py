from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from src.routes import truth_eval

app = FastAPI(title="orlog oracle")

origins = ["*"]

app.add_middleware(
    CORSMiddleware,
    allow_origins=origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(truth_eval.router)


@app.get("/healthchecker")
async def healthchecker():
    """
    Endpoint to check that the oracle application is up.

    :return: A dictionary with a status message.
    :rtype: dict
    """
    return {"message": "orlog oracle is running"}
