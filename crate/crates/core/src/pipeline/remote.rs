//! JSON-over-HTTP client for an external generative backend.
//!
//! `POST {url}/v1/generate` with a [`RemoteRequest`]; a 200 response carries a
//! [`RemoteResponse`] whose structure is a grayscale PNG, 0 = solid.

use std::io::ErrorKind;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::fem::DensityField;
use crate::problem::{render_mask_layer, render_problem, DesignProblem, Palette};
use crate::raster::GrayImage;

use super::evaluate::{ReportCode, ReportDiagnostic};
use super::{frozen_value, Generated, GenerationParams, PipelineError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub sketch_png_b64: String,
    pub mask_png_b64: Option<String>,
    pub volume_fraction: f64,
    pub load_angle_deg: f64,
    pub strength: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteMeta {
    pub backend: String,
    pub duration_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteResponse {
    pub structure_png_b64: String,
    pub meta: RemoteMeta,
}

impl RemoteRequest {
    /// Request for `problem`, drawn with the default palette at grid resolution.
    pub fn for_problem(
        problem: &DesignProblem,
        params: &GenerationParams,
    ) -> Result<Self, PipelineError> {
        let palette = Palette::default();
        let (w, h) = (problem.grid.nelx.max(2), problem.grid.nely.max(2));
        let encode = |png: Result<Vec<u8>, crate::raster::RasterError>| {
            png.map(|b| B64.encode(b))
                .map_err(|e| PipelineError::InvalidRequest(e.to_string()))
        };
        let sketch = encode(render_problem(problem, &palette, w, h).to_png())?;
        let mask = render_mask_layer(problem, &palette, w, h)
            .map(|m| encode(m.to_png()))
            .transpose()?;
        Ok(RemoteRequest {
            sketch_png_b64: sketch,
            mask_png_b64: mask,
            volume_fraction: problem.volume_fraction,
            load_angle_deg: params.load_angle_deg,
            strength: params.strength,
            seed: params.seed,
        })
    }
}

fn map_error(e: ureq::Error, timeout: Duration) -> PipelineError {
    match e {
        ureq::Error::Timeout(_) => PipelineError::Timeout(timeout),
        ureq::Error::Io(io) if matches!(io.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock) => {
            PipelineError::Timeout(timeout)
        }
        ureq::Error::StatusCode(code) if code >= 500 => {
            PipelineError::BackendUnavailable(format!("server answered HTTP {code}"))
        }
        ureq::Error::StatusCode(code) => {
            PipelineError::RemoteProtocolError(format!("server answered HTTP {code}"))
        }
        ureq::Error::Json(j) => {
            PipelineError::RemoteProtocolError(format!("malformed response: {j}"))
        }
        other => PipelineError::BackendUnavailable(other.to_string()),
    }
}

/// Send one request and decode the raw response.
pub fn remote_generate(
    url: &str,
    request: &RemoteRequest,
    timeout: Duration,
) -> Result<RemoteResponse, PipelineError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(true)
        .build()
        .into();
    let endpoint = format!("{}/v1/generate", url.trim_end_matches('/'));
    let mut resp = agent
        .post(&endpoint)
        .send_json(request)
        .map_err(|e| map_error(e, timeout))?;
    resp.body_mut()
        .read_json::<RemoteResponse>()
        .map_err(|e| match e {
            ureq::Error::Json(_) | ureq::Error::Protocol(_) => {
                PipelineError::RemoteProtocolError(format!("malformed response: {e}"))
            }
            other => map_error(other, timeout),
        })
}

/// Decode a response structure onto the problem grid. Editable elements take
/// the remote values; the rest follow the frozen-region rule.
pub fn decode_structure(
    response: &RemoteResponse,
    problem: &DesignProblem,
    prior: Option<&DensityField>,
) -> Result<(DensityField, Vec<ReportDiagnostic>), PipelineError> {
    let bytes = B64
        .decode(response.structure_png_b64.trim())
        .map_err(|e| PipelineError::RemoteProtocolError(format!("structure is not base64: {e}")))?;
    let image = GrayImage::from_png(&bytes)
        .map_err(|e| PipelineError::RemoteProtocolError(format!("structure is not a PNG: {e}")))?;
    let grid = problem.grid;
    let mut diagnostics = Vec::new();
    if (image.width, image.height) != (grid.nelx, grid.nely) {
        diagnostics.push(ReportDiagnostic::warning(
            ReportCode::Resampled,
            format!(
                "remote returned {}x{}, resampled to {}",
                image.width, image.height, grid
            ),
        ));
    }
    let values = image.to_densities(grid);
    let editable = problem.editable();
    let rho = (0..grid.n_elements())
        .map(|e| {
            if editable[e] {
                values[e]
            } else {
                frozen_value(problem, prior, e)
            }
        })
        .collect();
    Ok((
        DensityField {
            grid,
            rho,
            domain: problem.domain.clone(),
        },
        diagnostics,
    ))
}

pub(crate) fn generate_remote(
    problem: &DesignProblem,
    params: &GenerationParams,
    prior: Option<&DensityField>,
    url: &str,
    timeout: Duration,
) -> Result<Generated, PipelineError> {
    let request = RemoteRequest::for_problem(problem, params)?;
    let response = remote_generate(url, &request, timeout)?;
    let (field, diagnostics) = decode_structure(&response, problem, prior)?;
    Ok(Generated {
        field,
        iterations: 0,
        converged: true,
        diagnostics,
    })
}
