//! Weather ingestion, solar geometry and per-cell plane-of-array irradiance.

mod field;
mod shading;
mod sky;
mod solar;
mod weather;

pub use field::{
    aggregate_resolution, angular_response, direct_clearness_index, effective_irradiance, IrradianceField, Resolution,
    DEFAULT_ANGULAR_LOSS, DIFFUSE_INCIDENCE, SOLAR_CONSTANT,
};
pub use shading::{shade_scene, ArrayLayout, ArrayPlane, Obstruction, ShadingScene};
pub use sky::{compose_sky_radiance, plane_irradiance, SkyPatches, SkyRadiance};
pub use solar::{day_of_year, solar_position, SunPosition};
pub use weather::{parse_timestamp, IrradianceOverrides, WeatherRecord, WeatherSeries, DEFAULT_STEP_SECONDS};
