use crate::error::{Error, Result};

/// Discrete time index. One unit per processed instance.
pub type Step = u64;

/// Attribute arities and class arity of a discrete stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    arities: Vec<usize>,
    num_classes: usize,
}

impl Schema {
    pub fn new(arities: Vec<usize>, num_classes: usize) -> Result<Self> {
        if arities.is_empty() {
            return Err(Error::InvalidSchema(
                "at least one attribute is required".into(),
            ));
        }
        if let Some((i, &a)) = arities.iter().enumerate().find(|(_, &a)| a < 2) {
            return Err(Error::InvalidSchema(format!(
                "attribute {i} has arity {a} < 2"
            )));
        }
        if num_classes < 2 {
            return Err(Error::InvalidSchema(format!(
                "class arity {num_classes} < 2"
            )));
        }
        Ok(Self {
            arities,
            num_classes,
        })
    }

    /// All-binary schema with a binary class.
    pub fn binary(num_attributes: usize) -> Result<Self> {
        Self::new(vec![2; num_attributes], 2)
    }

    pub fn num_attributes(&self) -> usize {
        self.arities.len()
    }

    pub fn arity(&self, attribute: usize) -> usize {
        self.arities[attribute]
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Checks that `values` fits the attribute arities.
    pub fn check_values(&self, values: &[usize]) -> Result<()> {
        if values.len() != self.arities.len() {
            return Err(Error::SchemaViolation(format!(
                "expected {} attribute values, got {}",
                self.arities.len(),
                values.len()
            )));
        }
        for (i, (&v, &a)) in values.iter().zip(&self.arities).enumerate() {
            if v >= a {
                return Err(Error::SchemaViolation(format!(
                    "attribute {i} value {v} out of range for arity {a}"
                )));
            }
        }
        Ok(())
    }

    pub fn check(&self, instance: &Instance) -> Result<()> {
        self.check_values(&instance.values)?;
        if instance.class >= self.num_classes {
            return Err(Error::SchemaViolation(format!(
                "class {} out of range for {} classes",
                instance.class, self.num_classes
            )));
        }
        Ok(())
    }
}

/// One discretized, labeled example.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instance {
    pub values: Vec<usize>,
    pub class: usize,
    pub step: Step,
}

impl Instance {
    pub fn new(values: Vec<usize>, class: usize, step: Step) -> Self {
        Self {
            values,
            class,
            step,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_arities() {
        assert!(Schema::new(vec![], 2).is_err());
        assert!(Schema::new(vec![2, 1], 2).is_err());
        assert!(Schema::new(vec![2], 1).is_err());
    }

    #[test]
    fn checks_instances() {
        let schema = Schema::new(vec![2, 3], 2).unwrap();
        assert!(schema.check(&Instance::new(vec![1, 2], 1, 0)).is_ok());
        assert!(matches!(
            schema.check(&Instance::new(vec![2, 0], 0, 0)),
            Err(Error::SchemaViolation(_))
        ));
        assert!(schema.check(&Instance::new(vec![0, 0], 2, 0)).is_err());
        assert!(schema.check(&Instance::new(vec![0], 0, 0)).is_err());
    }
}
