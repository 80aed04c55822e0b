use std::fmt::Debug;

use num_traits::Float;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Float type metrics are computed in.
pub trait Scalar: Float + Debug + Default + Serialize + DeserializeOwned + Send + Sync + 'static {
    fn of(x: f64) -> Self {
        Self::from(x).expect("f64 converts to any float type")
    }

    fn of_count(n: usize) -> Self {
        Self::from(n).expect("count converts to any float type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `num / den`, or zero when `den` is zero.
pub fn ratio_or_zero<T: Scalar>(num: usize, den: usize) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::of_count(num) / T::of_count(den)
    }
}
