//! The eleven-fact sales table used throughout the docs and tests.

use std::collections::BTreeMap;

/// Sales facts with four dimensions (`location`, `time`, `salesman`,
/// `product`) and two measures (`cost`, `profit`). Amounts are dollars.
pub fn table2_csv() -> &'static str {
    "location,time,salesman,product,cost,profit
Montreal,March,John,shoe,100,10
Montreal,December,Smith,shoe,150,30
Quebec,December,Smith,dress,175,45
Ontario,April,Kate,dress,90,10
Paris,March,John,shoe,100,20
Paris,March,Marc,table,120,10
Paris,June,Martin,shoe,120,5
Lyon,April,Claude,dress,90,10
New York,October,Joe,chair,100,10
New York,May,Joe,chair,90,10
Detroit,April,Jim,dress,90,10
"
}

/// City to country map covering every `location` of [`table2_csv`].
pub fn city_country_mapping() -> BTreeMap<String, String> {
    [
        ("Montreal", "Canada"),
        ("Quebec", "Canada"),
        ("Ontario", "Canada"),
        ("Paris", "France"),
        ("Lyon", "France"),
        ("New York", "USA"),
        ("Detroit", "USA"),
    ]
    .into_iter()
    .map(|(city, country)| (city.to_owned(), country.to_owned()))
    .collect()
}
