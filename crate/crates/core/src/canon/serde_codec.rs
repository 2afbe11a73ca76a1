//! Serde bridge between Rust types and [`Value`] trees.
//!
//! Mapping: structs, tuples and fixed arrays become records; sequences become
//! lists; maps become lists of `[key, value]` records; strings and byte
//! buffers become byte leaves; `bool` and unsigned integers become integer
//! leaves; `Option` is a list of zero or one element; enum variants are
//! records whose first field is the variant index. Floats and negative
//! integers are rejected.
//!
//! Serializers report `is_human_readable() == false`, so fixed byte types
//! emit raw bytes here and hex/base64 strings in JSON.

use serde::de::{self, DeserializeOwned, IntoDeserializer, Visitor};
use serde::ser::{self, Serialize};

use super::value::{decode_canonical, encode_canonical, CanonicalBytes, Value};
use super::CanonError;

pub fn to_value<T: Serialize + ?Sized>(value: &T) -> Result<Value, CanonError> {
    value.serialize(ValueSerializer)
}

pub fn from_value<T: DeserializeOwned>(value: Value) -> Result<T, CanonError> {
    T::deserialize(ValueDeserializer(value))
}

/// Canonical bytes of any serializable value.
pub fn to_canonical<T: Serialize + ?Sized>(value: &T) -> Result<CanonicalBytes, CanonError> {
    Ok(encode_canonical(&to_value(value)?))
}

pub fn from_canonical<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, CanonError> {
    from_value(decode_canonical(bytes)?)
}

impl ser::Error for CanonError {
    fn custom<T: std::fmt::Display>(msg: T) -> Self {
        CanonError::Serde(msg.to_string())
    }
}

impl de::Error for CanonError {
    fn custom<T: std::fmt::Display>(msg: T) -> Self {
        CanonError::Serde(msg.to_string())
    }
}

struct ValueSerializer;

fn variant(index: u32, payload: Option<Value>) -> Value {
    let mut fields = vec![Value::Uint(u64::from(index))];
    fields.extend(payload);
    Value::Record(fields)
}

impl ser::Serializer for ValueSerializer {
    type Ok = Value;
    type Error = CanonError;
    type SerializeSeq = Collect;
    type SerializeTuple = Collect;
    type SerializeTupleStruct = Collect;
    type SerializeTupleVariant = Collect;
    type SerializeMap = CollectMap;
    type SerializeStruct = Collect;
    type SerializeStructVariant = Collect;

    fn is_human_readable(&self) -> bool {
        false
    }

    fn serialize_bool(self, v: bool) -> Result<Value, CanonError> {
        Ok(Value::Uint(u64::from(v)))
    }
    fn serialize_i8(self, v: i8) -> Result<Value, CanonError> {
        Value::try_uint(v)
    }
    fn serialize_i16(self, v: i16) -> Result<Value, CanonError> {
        Value::try_uint(v)
    }
    fn serialize_i32(self, v: i32) -> Result<Value, CanonError> {
        Value::try_uint(v)
    }
    fn serialize_i64(self, v: i64) -> Result<Value, CanonError> {
        Value::try_uint(v)
    }
    fn serialize_i128(self, v: i128) -> Result<Value, CanonError> {
        Value::try_uint(v)
    }
    fn serialize_u8(self, v: u8) -> Result<Value, CanonError> {
        Ok(Value::Uint(v.into()))
    }
    fn serialize_u16(self, v: u16) -> Result<Value, CanonError> {
        Ok(Value::Uint(v.into()))
    }
    fn serialize_u32(self, v: u32) -> Result<Value, CanonError> {
        Ok(Value::Uint(v.into()))
    }
    fn serialize_u64(self, v: u64) -> Result<Value, CanonError> {
        Ok(Value::Uint(v))
    }
    fn serialize_u128(self, v: u128) -> Result<Value, CanonError> {
        Value::try_uint(v)
    }
    fn serialize_f32(self, _v: f32) -> Result<Value, CanonError> {
        Err(CanonError::Unsupported("f32"))
    }
    fn serialize_f64(self, _v: f64) -> Result<Value, CanonError> {
        Err(CanonError::Unsupported("f64"))
    }
    fn serialize_char(self, v: char) -> Result<Value, CanonError> {
        Ok(Value::bytes(v.to_string()))
    }
    fn serialize_str(self, v: &str) -> Result<Value, CanonError> {
        Ok(Value::bytes(v))
    }
    fn serialize_bytes(self, v: &[u8]) -> Result<Value, CanonError> {
        Ok(Value::bytes(v))
    }
    fn serialize_none(self) -> Result<Value, CanonError> {
        Ok(Value::List(vec![]))
    }
    fn serialize_some<T: Serialize + ?Sized>(self, value: &T) -> Result<Value, CanonError> {
        Ok(Value::List(vec![to_value(value)?]))
    }
    fn serialize_unit(self) -> Result<Value, CanonError> {
        Ok(Value::List(vec![]))
    }
    fn serialize_unit_struct(self, _name: &'static str) -> Result<Value, CanonError> {
        Ok(Value::List(vec![]))
    }
    fn serialize_unit_variant(
        self,
        _name: &'static str,
        index: u32,
        _variant: &'static str,
    ) -> Result<Value, CanonError> {
        Ok(variant(index, None))
    }
    fn serialize_newtype_struct<T: Serialize + ?Sized>(
        self,
        _name: &'static str,
        value: &T,
    ) -> Result<Value, CanonError> {
        to_value(value)
    }
    fn serialize_newtype_variant<T: Serialize + ?Sized>(
        self,
        _name: &'static str,
        index: u32,
        _variant: &'static str,
        value: &T,
    ) -> Result<Value, CanonError> {
        Ok(variant(index, Some(to_value(value)?)))
    }
    fn serialize_seq(self, len: Option<usize>) -> Result<Collect, CanonError> {
        Ok(Collect::new(Shape::List, len.unwrap_or(0)))
    }
    fn serialize_tuple(self, len: usize) -> Result<Collect, CanonError> {
        Ok(Collect::new(Shape::Record, len))
    }
    fn serialize_tuple_struct(self, _name: &'static str, len: usize) -> Result<Collect, CanonError> {
        Ok(Collect::new(Shape::Record, len))
    }
    fn serialize_tuple_variant(
        self,
        _name: &'static str,
        index: u32,
        _variant: &'static str,
        len: usize,
    ) -> Result<Collect, CanonError> {
        Ok(Collect::new(Shape::Variant(index), len))
    }
    fn serialize_map(self, len: Option<usize>) -> Result<CollectMap, CanonError> {
        Ok(CollectMap {
            entries: Vec::with_capacity(len.unwrap_or(0)),
            key: None,
        })
    }
    fn serialize_struct(self, _name: &'static str, len: usize) -> Result<Collect, CanonError> {
        Ok(Collect::new(Shape::Record, len))
    }
    fn serialize_struct_variant(
        self,
        _name: &'static str,
        index: u32,
        _variant: &'static str,
        len: usize,
    ) -> Result<Collect, CanonError> {
        Ok(Collect::new(Shape::Variant(index), len))
    }
}

enum Shape {
    List,
    Record,
    Variant(u32),
}

struct Collect {
    shape: Shape,
    items: Vec<Value>,
}

impl Collect {
    fn new(shape: Shape, len: usize) -> Self {
        Collect {
            shape,
            items: Vec::with_capacity(len),
        }
    }

    fn push<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), CanonError> {
        self.items.push(to_value(value)?);
        Ok(())
    }

    fn finish(self) -> Value {
        match self.shape {
            Shape::List => Value::List(self.items),
            Shape::Record => Value::Record(self.items),
            Shape::Variant(index) => variant(index, Some(Value::Record(self.items))),
        }
    }
}

impl ser::SerializeSeq for Collect {
    type Ok = Value;
    type Error = CanonError;
    fn serialize_element<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), CanonError> {
        self.push(value)
    }
    fn end(self) -> Result<Value, CanonError> {
        Ok(self.finish())
    }
}

impl ser::SerializeTuple for Collect {
    type Ok = Value;
    type Error = CanonError;
    fn serialize_element<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), CanonError> {
        self.push(value)
    }
    fn end(self) -> Result<Value, CanonError> {
        Ok(self.finish())
    }
}

impl ser::SerializeTupleStruct for Collect {
    type Ok = Value;
    type Error = CanonError;
    fn serialize_field<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), CanonError> {
        self.push(value)
    }
    fn end(self) -> Result<Value, CanonError> {
        Ok(self.finish())
    }
}

impl ser::SerializeTupleVariant for Collect {
    type Ok = Value;
    type Error = CanonError;
    fn serialize_field<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), CanonError> {
        self.push(value)
    }
    fn end(self) -> Result<Value, CanonError> {
        Ok(self.finish())
    }
}

impl ser::SerializeStruct for Collect {
    type Ok = Value;
    type Error = CanonError;
    fn serialize_field<T: Serialize + ?Sized>(
        &mut self,
        _key: &'static str,
        value: &T,
    ) -> Result<(), CanonError> {
        self.push(value)
    }
    fn skip_field(&mut self, key: &'static str) -> Result<(), CanonError> {
        Err(CanonError::Serde(format!("field `{key}` cannot be skipped in canonical form")))
    }
    fn end(self) -> Result<Value, CanonError> {
        Ok(self.finish())
    }
}

impl ser::SerializeStructVariant for Collect {
    type Ok = Value;
    type Error = CanonError;
    fn serialize_field<T: Serialize + ?Sized>(
        &mut self,
        _key: &'static str,
        value: &T,
    ) -> Result<(), CanonError> {
        self.push(value)
    }
    fn end(self) -> Result<Value, CanonError> {
        Ok(self.finish())
    }
}

struct CollectMap {
    entries: Vec<Value>,
    key: Option<Value>,
}

impl ser::SerializeMap for CollectMap {
    type Ok = Value;
    type Error = CanonError;
    fn serialize_key<T: Serialize + ?Sized>(&mut self, key: &T) -> Result<(), CanonError> {
        self.key = Some(to_value(key)?);
        Ok(())
    }
    fn serialize_value<T: Serialize + ?Sized>(&mut self, value: &T) -> Result<(), CanonError> {
        let key = self
            .key
            .take()
            .ok_or_else(|| CanonError::Serde("map value without key".into()))?;
        self.entries.push(Value::Record(vec![key, to_value(value)?]));
        Ok(())
    }
    fn end(self) -> Result<Value, CanonError> {
        Ok(Value::List(self.entries))
    }
}

struct ValueDeserializer(Value);

fn unexpected(expected: &'static str, got: &Value) -> CanonError {
    let kind = match got {
        Value::Bytes(_) => "bytes",
        Value::Uint(_) => "uint",
        Value::List(_) => "list",
        Value::Record(_) => "record",
    };
    CanonError::Shape { expected, got: kind }
}

impl ValueDeserializer {
    fn uint(self) -> Result<u64, CanonError> {
        match self.0 {
            Value::Uint(n) => Ok(n),
            other => Err(unexpected("uint", &other)),
        }
    }

    fn bytes(self) -> Result<Vec<u8>, CanonError> {
        match self.0 {
            Value::Bytes(b) => Ok(b),
            other => Err(unexpected("bytes", &other)),
        }
    }

    fn record(self, len: usize) -> Result<Vec<Value>, CanonError> {
        match self.0 {
            Value::Record(fields) if fields.len() == len => Ok(fields),
            Value::Record(fields) => Err(CanonError::FieldCount {
                expected: len,
                got: fields.len(),
            }),
            other => Err(unexpected("record", &other)),
        }
    }
}

macro_rules! deserialize_uint {
    ($($method:ident),*) => {$(
        fn $method<V: Visitor<'de>>(self, visitor: V) -> Result<V::Value, CanonError> {
            visitor.visit_u64(self.uint()?)
        }
    )*};
}

impl<'de> de::Deserializer<'de> for ValueDeserializer {
    type Error = CanonError;

    fn is_human_readable(&self) -> bool {
        false
    }

    fn deserialize_any<V: Visitor<'de>>(self, visitor: V) -> Result<V::Value, CanonError> {
        match self.0 {
            Value::Bytes(b) => visitor.visit_byte_buf(b),
            Value::Uint(n) => visitor.visit_u64(n),
            Value::List(items) | Value::Record(items) => visitor.visit_seq(Items::new(items)),
        }
    }

    deserialize_uint!(
        deserialize_u8,
        deserialize_u16,
        deserialize_u32,
        deserialize_u64,
        deserialize_u128,
        deserialize_i8,
        deserialize_i16,
        deserialize_i32,
        deserialize_i64,
        deserialize_i128
    );

    fn deserialize_bool<V: Visitor<'de>>(self, visitor: V) -> Result<V::Value, CanonError> {
        match self.uint()? {
            0 => visitor.visit_bool(false),
            1 => visitor.visit_bool(true),
            n => Err(CanonError::Serde(format!("invalid bool {n}"))),
        }
    }

    fn deserialize_f32<V: Visitor<'de>>(self, _visitor: V) -> Result<V::Value, CanonError> {
        Err(CanonError::Unsupported("f32"))
    }

    fn deserialize_f64<V: Visitor<'de>>(self, _visitor: V) -> Result<V::Value, CanonError> {
        Err(CanonError::Unsupported("f64"))
    }

    fn deserialize_char<V: Visitor<'de>>(self, visitor: V) -> Result<V::Value, CanonError> {
        let s = String::from_utf8(self.bytes()?).map_err(|_| CanonError::InvalidUtf8)?;
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => visitor.visit_char(c),
            _ => Err(CanonError::Serde("expected a single char".into())),
        }
    }

    fn deserialize_str<V: Visitor<'de>>(self, visitor: V) -> Result<V::Value, CanonError> {
        self.deserialize_string(visitor)
    }

    fn deserialize_string<V: Visitor<'de>>(self, visitor: V) -> Result<V::Value, CanonError> {
        let s = String::from_utf8(self.bytes()?).map_err(|_| CanonError::InvalidUtf8)?;
        visitor.visit_string(s)
    }

    fn deserialize_bytes<V: Visitor<'de>>(self, visitor: V) -> Result<V::Value, CanonError> {
        visitor.visit_byte_buf(self.bytes()?)
    }

    fn deserialize_byte_buf<V: Visitor<'de>>(self, visitor: V) -> Result<V::Value, CanonError> {
        visitor.visit_byte_buf(self.bytes()?)
    }

    fn deserialize_option<V: Visitor<'de>>(self, visitor: V) -> Result<V::Value, CanonError> {
        match self.0 {
            Value::List(mut items) if items.len() <= 1 => match items.pop() {
                None => visitor.visit_none(),
                Some(inner) => visitor.visit_some(ValueDeserializer(inner)),
            },
            other => Err(unexpected("option", &other)),
        }
    }

    fn deserialize_unit<V: Visitor<'de>>(self, visitor: V) -> Result<V::Value, CanonError> {
        match self.0 {
            Value::List(items) if items.is_empty() => visitor.visit_unit(),
            other => Err(unexpected("unit", &other)),
        }
    }

    fn deserialize_unit_struct<V: Visitor<'de>>(
        self,
        _name: &'static str,
        visitor: V,
    ) -> Result<V::Value, CanonError> {
        self.deserialize_unit(visitor)
    }

    fn deserialize_newtype_struct<V: Visitor<'de>>(
        self,
        _name: &'static str,
        visitor: V,
    ) -> Result<V::Value, CanonError> {
        visitor.visit_newtype_struct(self)
    }

    fn deserialize_seq<V: Visitor<'de>>(self, visitor: V) -> Result<V::Value, CanonError> {
        match self.0 {
            Value::List(items) => visitor.visit_seq(Items::new(items)),
            other => Err(unexpected("list", &other)),
        }
    }

    fn deserialize_tuple<V: Visitor<'de>>(self, len: usize, visitor: V) -> Result<V::Value, CanonError> {
        visitor.visit_seq(Items::new(self.record(len)?))
    }

    fn deserialize_tuple_struct<V: Visitor<'de>>(
        self,
        _name: &'static str,
        len: usize,
        visitor: V,
    ) -> Result<V::Value, CanonError> {
        self.deserialize_tuple(len, visitor)
    }

    fn deserialize_map<V: Visitor<'de>>(self, visitor: V) -> Result<V::Value, CanonError> {
        match self.0 {
            Value::List(entries) => visitor.visit_map(Entries {
                entries: entries.into_iter(),
                value: None,
            }),
            other => Err(unexpected("map", &other)),
        }
    }

    fn deserialize_struct<V: Visitor<'de>>(
        self,
        _name: &'static str,
        fields: &'static [&'static str],
        visitor: V,
    ) -> Result<V::Value, CanonError> {
        visitor.visit_seq(Items::new(self.record(fields.len())?))
    }

    fn deserialize_enum<V: Visitor<'de>>(
        self,
        _name: &'static str,
        _variants: &'static [&'static str],
        visitor: V,
    ) -> Result<V::Value, CanonError> {
        match self.0 {
            Value::Record(mut fields) if matches!(fields.len(), 1 | 2) => {
                let payload = if fields.len() == 2 { fields.pop() } else { None };
                let index = match fields.pop() {
                    Some(Value::Uint(i)) => u32::try_from(i).map_err(|_| CanonError::Serde("variant index".into()))?,
                    _ => return Err(CanonError::Serde("variant index must be uint".into())),
                };
                visitor.visit_enum(Variant { index, payload })
            }
            other => Err(unexpected("enum record", &other)),
        }
    }

    fn deserialize_identifier<V: Visitor<'de>>(self, visitor: V) -> Result<V::Value, CanonError> {
        match self.0 {
            Value::Uint(n) => visitor.visit_u64(n),
            Value::Bytes(b) => {
                visitor.visit_string(String::from_utf8(b).map_err(|_| CanonError::InvalidUtf8)?)
            }
            other => Err(unexpected("identifier", &other)),
        }
    }

    fn deserialize_ignored_any<V: Visitor<'de>>(self, visitor: V) -> Result<V::Value, CanonError> {
        visitor.visit_unit()
    }
}

struct Items {
    iter: std::vec::IntoIter<Value>,
}

impl Items {
    fn new(items: Vec<Value>) -> Self {
        Items { iter: items.into_iter() }
    }
}

impl<'de> de::SeqAccess<'de> for Items {
    type Error = CanonError;

    fn next_element_seed<T: de::DeserializeSeed<'de>>(
        &mut self,
        seed: T,
    ) -> Result<Option<T::Value>, CanonError> {
        self.iter
            .next()
            .map(|v| seed.deserialize(ValueDeserializer(v)))
            .transpose()
    }

    fn size_hint(&self) -> Option<usize> {
        Some(self.iter.len())
    }
}

struct Entries {
    entries: std::vec::IntoIter<Value>,
    value: Option<Value>,
}

impl<'de> de::MapAccess<'de> for Entries {
    type Error = CanonError;

    fn next_key_seed<K: de::DeserializeSeed<'de>>(&mut self, seed: K) -> Result<Option<K::Value>, CanonError> {
        match self.entries.next() {
            None => Ok(None),
            Some(Value::Record(mut kv)) if kv.len() == 2 => {
                self.value = kv.pop();
                let key = kv.pop().ok_or(CanonError::UnexpectedEof)?;
                seed.deserialize(ValueDeserializer(key)).map(Some)
            }
            Some(other) => Err(unexpected("map entry", &other)),
        }
    }

    fn next_value_seed<T: de::DeserializeSeed<'de>>(&mut self, seed: T) -> Result<T::Value, CanonError> {
        let value = self
            .value
            .take()
            .ok_or_else(|| CanonError::Serde("map key without value".into()))?;
        seed.deserialize(ValueDeserializer(value))
    }
}

struct Variant {
    index: u32,
    payload: Option<Value>,
}

impl<'de> de::EnumAccess<'de> for Variant {
    type Error = CanonError;
    type Variant = Payload;

    fn variant_seed<T: de::DeserializeSeed<'de>>(self, seed: T) -> Result<(T::Value, Payload), CanonError> {
        let tag = seed.deserialize(self.index.into_deserializer())?;
        Ok((tag, Payload(self.payload)))
    }
}

struct Payload(Option<Value>);

impl<'de> de::VariantAccess<'de> for Payload {
    type Error = CanonError;

    fn unit_variant(self) -> Result<(), CanonError> {
        match self.0 {
            None => Ok(()),
            Some(_) => Err(CanonError::Serde("unexpected payload on unit variant".into())),
        }
    }

    fn newtype_variant_seed<T: de::DeserializeSeed<'de>>(self, seed: T) -> Result<T::Value, CanonError> {
        let v = self.0.ok_or(CanonError::UnexpectedEof)?;
        seed.deserialize(ValueDeserializer(v))
    }

    fn tuple_variant<V: Visitor<'de>>(self, len: usize, visitor: V) -> Result<V::Value, CanonError> {
        let v = self.0.ok_or(CanonError::UnexpectedEof)?;
        de::Deserializer::deserialize_tuple(ValueDeserializer(v), len, visitor)
    }

    fn struct_variant<V: Visitor<'de>>(
        self,
        fields: &'static [&'static str],
        visitor: V,
    ) -> Result<V::Value, CanonError> {
        let v = self.0.ok_or(CanonError::UnexpectedEof)?;
        visitor.visit_seq(Items::new(ValueDeserializer(v).record(fields.len())?))
    }
}
